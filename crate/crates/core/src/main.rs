fn main() {
    std::process::exit(bare_bones::cli::main_with_args(std::env::args_os()));
}
