# алгебра, построение полей, численный анализ и проверки
