fn main() {
    std::process::exit(osmosis::cli::main_with_args(std::env::args_os()));
}
