fn main() {
    std::process::exit(tempdep_cli::main_with_args(std::env::args_os()));
}
