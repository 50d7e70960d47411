use std::process::ExitCode;

fn main() -> ExitCode {
    tokprobe::cli::main()
}
