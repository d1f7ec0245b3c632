fn main() {
    std::process::exit(dstt::cli::run(std::env::args_os()));
}
