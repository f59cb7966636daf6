fn main() {
    std::process::exit(brane_lab::lab::run_cli(std::env::args_os()));
}
