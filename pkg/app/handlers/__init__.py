# обработчики команд CLI
