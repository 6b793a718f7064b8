fn main() {
    std::process::exit(siat_gateway::cli::run(std::env::args_os()));
}
