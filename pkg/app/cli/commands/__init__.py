# Command handlers
