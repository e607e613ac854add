from curvedistill.cli import main

main()
