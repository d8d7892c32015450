fn main() {
    std::process::exit(vdrelabel::cli::main_with_args(std::env::args_os()));
}
