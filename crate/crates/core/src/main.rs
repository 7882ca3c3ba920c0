fn main() {
    std::process::exit(varflow::cli::run(std::env::args_os()));
}
