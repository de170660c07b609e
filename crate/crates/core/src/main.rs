fn main() {
    std::process::exit(snpalq::cli::run(std::env::args_os()));
}
