fn main() -> std::process::ExitCode {
    vxpl::cli::run()
}
