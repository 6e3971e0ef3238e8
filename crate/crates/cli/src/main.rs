fn main() {
    std::process::exit(mfglab::run(std::env::args_os()));
}
