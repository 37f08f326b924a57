"""
One module per subcommand: generate, train, reconstruct, animate, eval
"""
