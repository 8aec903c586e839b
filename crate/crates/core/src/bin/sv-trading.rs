fn main() {
    std::process::exit(sv_trading::cli::main_with_args(std::env::args_os()));
}
