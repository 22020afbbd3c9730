fn main() {
    let args: Vec<String> = std::env::args().collect();
    std::process::exit(limecon::cli::run(&args));
}
