fn main() {
    std::process::exit(sskpca::cli::main_with_args(std::env::args_os()));
}
