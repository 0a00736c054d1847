fn main() -> std::process::ExitCode {
    noisy_qaoa::cli::main()
}
