fn main() {
    std::process::exit(skewvar::cli::dispatch(std::env::args_os()));
}
