fn main() -> std::process::ExitCode {
    framepick_server::cli::main()
}
