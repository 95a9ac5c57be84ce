fn main() {
    std::process::exit(kidesign_cli::run(std::env::args_os()));
}
