fn main() -> std::process::ExitCode {
    mars_core::cli::main()
}
