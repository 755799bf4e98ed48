fn main() {
    std::process::exit(las::cli::run(std::env::args_os()));
}
