fn main() { std::process::exit(mixcut::cli::run()) }
