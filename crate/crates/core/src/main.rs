fn main() {
    std::process::exit(gfsnet::cli::run(std::env::args_os()));
}
