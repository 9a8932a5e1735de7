fn main() {
    std::process::exit(heisenheat::cli::run());
}
