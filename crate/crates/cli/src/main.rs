fn main() {
    std::process::exit(trajplan_cli::run(std::env::args_os()));
}
