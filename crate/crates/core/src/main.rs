fn main() {
    std::process::exit(asi_nowcast::cli::main())
}
