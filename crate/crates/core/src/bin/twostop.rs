fn main() {
    std::process::exit(twostop::cli::main_with_args(std::env::args_os()));
}
