use deeperbind_core::{one_hot, DnaSequence, Model, ModelKind, ModelSpec, Result};

fn main() -> Result<()> {
    let spec = ModelSpec {
        kind: ModelKind::DeeperBind,
        filters: 5,
        motif_len: 11,
        lstm_arch: Some("10:10".into()),
        fc_hidden: Some(32),
        dropout: 0.0,
    };
    let model = Model::init(&spec, 42)?;
    let seq: DnaSequence = "ACGTACGTACGTACGTACGT".parse()?;
    let y = model.predict_tensor(&one_hot(&seq))?;
    println!("predicted intensity for {seq}: {y:.6}");
    Ok(())
}
