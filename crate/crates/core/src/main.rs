fn main() {
    std::process::exit(bvfilter::cli::run(std::env::args_os()));
}
