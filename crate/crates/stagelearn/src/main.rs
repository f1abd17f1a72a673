fn main() {
    std::process::exit(stagelearn::cli::main_with_args(std::env::args_os()));
}
