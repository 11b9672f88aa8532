fn main() {
    std::process::exit(ivoct::run_cli());
}
