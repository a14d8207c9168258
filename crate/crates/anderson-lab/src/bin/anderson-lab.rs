//! Thin command-line front end. All logic lives in the library.

fn main() {
    eprintln!("anderson-lab: commands not wired yet");
    std::process::exit(2);
}
