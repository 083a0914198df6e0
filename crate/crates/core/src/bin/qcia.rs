fn main() {
    std::process::exit(qcia::cli::dispatch(std::env::args_os()));
}
