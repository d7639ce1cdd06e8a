fn main() {
    std::process::exit(hisunet::cli::main_with(std::env::args_os()));
}
