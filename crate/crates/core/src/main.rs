fn main() -> std::process::ExitCode {
    sas_core::cli::run(std::env::args_os())
}
