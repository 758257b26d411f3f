fn main() {
    mapconv_cli::run()
}
