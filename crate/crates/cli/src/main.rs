fn main() {
    std::process::exit(fedsink_cli::main_with(std::env::args_os()));
}
