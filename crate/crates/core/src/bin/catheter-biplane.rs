fn main() {
    std::process::exit(catheter_biplane::cli::main_with_args(std::env::args_os()));
}
