fn main() {
    std::process::exit(blocklsq::cli::main_from(std::env::args_os()));
}
