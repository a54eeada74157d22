from spiked_edgeworth.cli import main

main()
