use std::io;

use newton_switch::cli::{main_with, THREADS_ENV};

fn main() {
    let threads = std::env::var(THREADS_ENV).ok();
    let code = main_with(std::env::args_os(), threads.as_deref(), &mut io::stdout(), &mut io::stderr());
    std::process::exit(code);
}
