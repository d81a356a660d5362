fn main() {
    std::process::exit(longtail::cli::run(std::env::args_os()));
}
