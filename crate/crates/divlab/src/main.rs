fn main() {
    std::process::exit(divlab::cli::dispatch(std::env::args().collect()));
}
