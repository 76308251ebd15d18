fn main() {
    std::process::exit(mlfocal::cli::run_command(std::env::args_os()));
}
