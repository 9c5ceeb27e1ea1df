fn main() {
    let argv: Vec<String> = std::env::args().collect();
    std::process::exit(deeperbind_cli::run(argv));
}
