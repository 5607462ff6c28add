fn main() -> std::process::ExitCode {
    eccola_facilitation::cli::main_with_args()
}
