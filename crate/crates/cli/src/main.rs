fn main() {
    std::process::exit(alexandria_cli::main_with(std::env::args_os()));
}
