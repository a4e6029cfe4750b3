fn main() {
    std::process::exit(weaksym::cli::main_with(std::env::args_os()));
}
