fn main() {
    std::process::exit(nibblescan_cli::run(std::env::args_os()));
}
