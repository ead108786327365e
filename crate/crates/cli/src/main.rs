fn main() {
    std::process::exit(dagrid_cli::run(std::env::args_os()));
}
