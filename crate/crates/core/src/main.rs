fn main() {
    std::process::exit(fhe_fft::cli::main_with_args(std::env::args_os()));
}
