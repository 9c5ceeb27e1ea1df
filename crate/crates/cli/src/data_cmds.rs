//! `encode` and `generate`: sequence encoding and synthetic dataset
//! construction.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::Serialize;

use deeperbind_core::{
    generate_synthetic, load_pbm, make_positional_dataset, multi_motif_dataset, one_hot,
    write_tsv, DnaSequence, SyntheticSpec, Tensor,
};

use crate::args::{EncodeArgs, GenKind, GenerateArgs};

#[derive(Serialize)]
struct EncodedSeq {
    sequence: String,
    one_hot: Tensor,
}

pub fn encode(args: &EncodeArgs) -> Result<()> {
    let sequences: Vec<String> = if let Some(seq) = &args.sequence {
        vec![seq.clone()]
    } else if let Some(path) = &args.data {
        let (array, _) = load_pbm(path, &args.format.hints())?;
        array.probes.iter().map(|p| p.sequence.to_string()).collect()
    } else {
        bail!("pass --sequence or --data");
    };

    let mut encoded = Vec::with_capacity(sequences.len());
    for s in &sequences {
        let seq: DnaSequence = s.parse()?;
        encoded.push(EncodedSeq { sequence: s.clone(), one_hot: one_hot(&seq) });
    }
    let mut json = serde_json::to_string_pretty(&encoded)?;
    json.push('\n');
    match &args.out {
        Some(path) => {
            fs::write(path, json).with_context(|| format!("{}", path.display()))?;
            println!("encoded {} sequences to {}", encoded.len(), path.display());
        }
        None => print!("{json}"),
    }
    Ok(())
}

fn load_pwm(path: &Path) -> Result<Tensor> {
    let text = fs::read_to_string(path).with_context(|| format!("pwm {}", path.display()))?;
    let pwm: Tensor = serde_json::from_str(&text)
        .with_context(|| format!("pwm {} is not a JSON tensor {{shape, data}}", path.display()))?;
    Ok(pwm)
}

/// Cycling-base motif used when no --pwm file is supplied: position t favors
/// base t mod 4 with the given log-odds strength.
fn default_pwm(width: usize, strength: f64, phase: usize) -> Result<Tensor> {
    if width == 0 {
        bail!("--motif-len must be positive");
    }
    let mut data = vec![0.0; 4 * width];
    for t in 0..width {
        data[((t + phase) % 4) * width + t] = strength;
    }
    Ok(Tensor::new(vec![4, width], data)?)
}

pub fn generate(args: &GenerateArgs) -> Result<()> {
    let array = match args.kind {
        GenKind::Planted | GenKind::Positional => {
            let pwm = match args.pwm.len() {
                0 => default_pwm(args.motif_len, args.motif_strength, 0)?,
                1 => load_pwm(&args.pwm[0])?,
                n => bail!("kind {:?} takes at most one --pwm, got {n}", args.kind),
            };
            let spec = SyntheticSpec {
                pwm,
                probe_count: args.probes,
                probe_length: args.length,
                noise_sd: args.noise,
                planted_fraction: args.fraction,
                seed: args.seed,
            };
            match args.kind {
                GenKind::Planted => generate_synthetic(&spec)?,
                _ => make_positional_dataset(&spec, args.effect.effect(), args.magnitude)?,
            }
        }
        GenKind::Multi => {
            let pwms: Vec<Tensor> = if args.pwm.is_empty() {
                vec![
                    default_pwm(args.motif_len, args.motif_strength, 0)?,
                    default_pwm(args.motif_len, args.motif_strength, 1)?,
                ]
            } else {
                args.pwm.iter().map(|p| load_pwm(p)).collect::<Result<_>>()?
            };
            multi_motif_dataset(&pwms, args.probes, args.length, args.noise, args.seed)?
        }
    };
    if let Some(parent) = args.out.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).with_context(|| format!("{}", parent.display()))?;
        }
    }
    write_tsv(&array, &args.out)?;
    println!("wrote {} probes to {}", array.len(), args.out.display());
    Ok(())
}
