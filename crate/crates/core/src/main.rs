fn main() {
    std::process::exit(confound_lens::cli::run(std::env::args_os()));
}
