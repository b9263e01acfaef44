fn main() {
    std::process::exit(twistgf::cli::main_with_args(std::env::args_os()));
}
