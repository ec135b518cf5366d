fn main() {
    std::process::exit(oocstore::cli::main_with_args(std::env::args_os()));
}
