fn main() {
    std::process::exit(locfloer_cli::run(std::env::args_os()));
}
