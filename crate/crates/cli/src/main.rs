fn main() {
    let code = progmoney_cli::run_cli(std::env::args_os());
    std::process::exit(code);
}
