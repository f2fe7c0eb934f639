fn main() {
    std::process::exit(boxsup::cli::run(std::env::args_os()));
}
