fn main() {
    std::process::exit(netsym_cli::run(std::env::args_os().collect()));
}
