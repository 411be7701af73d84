use std::process::ExitCode;

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    ExitCode::from(rdprobe::run_cli(&args).clamp(0, 255) as u8)
}
