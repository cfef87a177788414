fn main() {
    std::process::exit(cogloc::cli::main_with_args(std::env::args_os()));
}
