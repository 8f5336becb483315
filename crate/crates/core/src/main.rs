fn main() {
    std::process::exit(gaze_attention::cli::run(std::env::args_os()));
}
