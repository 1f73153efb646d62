fn main() {
    std::process::exit(cyclic_wavemap::cli::run(std::env::args_os()));
}
