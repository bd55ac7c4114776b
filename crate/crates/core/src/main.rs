fn main() -> std::process::ExitCode {
    dpgp::cli::main()
}
