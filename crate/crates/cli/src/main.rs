fn main() {
    std::process::exit(rmp_cli::main_with_args(std::env::args_os()));
}
