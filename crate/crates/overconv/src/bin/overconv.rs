use std::io::Write;
use std::time::Instant;

fn main() {
    let start = Instant::now();
    let (code, out) = overconv::cli::run(std::env::args_os());
    let mut stdout = std::io::stdout().lock();
    // A closed pipe is not worth a panic.
    let _ = stdout.write_all(out.as_bytes());
    let _ = stdout.flush();
    if std::env::var_os("OVERCONV_LOG").is_some() {
        eprintln!("overconv: exit {code} after {:.3}s", start.elapsed().as_secs_f64());
    }
    std::process::exit(code);
}
