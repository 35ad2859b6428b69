fn main() {
    let args: Vec<String> = std::env::args().collect();
    std::process::exit(udc_lab_cli::app::run(&args));
}
