fn main() {
    std::process::exit(gaussprobe::cli::main());
}
