fn main() {
    std::process::exit(fodsid::cli::run(std::env::args_os()));
}
