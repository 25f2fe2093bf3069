fn main() {
    std::process::exit(toxi_cli::main_with_args(std::env::args_os()));
}
