fn main() {
    std::process::exit(relbridge::cli::dispatch(std::env::args_os()));
}
