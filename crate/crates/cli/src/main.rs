fn main() {
    std::process::exit(polymer_cli::main_with(std::env::args_os()));
}
