fn main() {
    std::process::exit(deeplin_cli::run());
}

mod deeplin_cli {
    pub fn run() -> i32 {
        eprintln!("cli not wired yet");
        2
    }
}
